#include <bit>
#include <charconv>

#include "binary_io.hpp"
#include "flowcal/flow.hpp"

namespace flowcal {

using detail::get_le;
using detail::put_le;

namespace {

constexpr char kMagic[] = "FLOW";

class Reader {
 public:
  Reader(std::string bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

  template <typename T>
  T take() {
    need(sizeof(T));
    const T v = get_le<T>(bytes_, at_);
    at_ += sizeof(T);
    return v;
  }

  double take_f64() { return std::bit_cast<double>(take<std::uint64_t>()); }

  void take_into(Vector& v) {
    for (Index i = 0; i < v.size(); ++i) v(i) = take_f64();
  }
  void take_into(Matrix& m) {
    Eigen::Map<Vector> flat(m.data(), m.size());
    for (Index i = 0; i < flat.size(); ++i) flat(i) = take_f64();
  }

  void expect_end() const {
    if (at_ != bytes_.size())
      throw CorruptFileError(name_ + ": corrupt file: " + std::to_string(bytes_.size() - at_) +
                             " trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - at_ < n)
      throw CorruptFileError(name_ + ": corrupt file: truncated at offset " + std::to_string(at_));
  }

  std::string bytes_;
  std::string name_;
  std::size_t at_ = 0;
};

void put_f64(std::string& out, double v) { put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }

template <typename M>
void put_all(std::string& out, const M& m) {
  const Eigen::Map<const Vector> flat(m.data(), m.size());
  for (Index i = 0; i < flat.size(); ++i) put_f64(out, flat(i));
}

}  // namespace

void save_model(const std::filesystem::path& path, const FlowModel& model) {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kFlowFormatVersion);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(model.dim));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(model.config.levels));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(model.config.depth));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(model.config.width));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.config.coupling));
  put_le<std::uint64_t>(out, model.seed);
  put_le<std::uint64_t>(out, model.blocks.size());
  for (const auto& b : model.blocks) {
    for (Index p : b.permutation.perm) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(p));
    out.push_back(b.actnorm.initialized ? 1 : 0);
    const auto& net = b.coupling.net;
    put_all(out, b.actnorm.scale);
    put_all(out, b.actnorm.bias);
    put_all(out, net.w1);
    put_all(out, net.b1);
    put_all(out, net.w2);
    put_all(out, net.b2);
    put_all(out, net.w3);
    put_all(out, net.b3);
  }
  detail::write_all(path, out);
}

FlowModel load_model(const std::filesystem::path& path) {
  Reader in(detail::read_all(path), path.string());
  std::string magic(4, '\0');
  try {
    for (auto& c : magic) c = static_cast<char>(in.take<std::uint8_t>());
  } catch (const CorruptFileError&) {
    throw FormatError(path.string() + ": format error: not a flow model");
  }
  if (magic != kMagic) throw FormatError(path.string() + ": format error: bad magic");
  const auto version = in.take<std::uint32_t>();
  if (version != kFlowFormatVersion)
    throw FormatError(path.string() + ": format error: unsupported version " +
                      std::to_string(version));

  const auto dim = static_cast<Index>(in.take<std::uint64_t>());
  FlowConfig cfg;
  cfg.levels = static_cast<Index>(in.take<std::uint64_t>());
  cfg.depth = static_cast<Index>(in.take<std::uint64_t>());
  cfg.width = static_cast<Index>(in.take<std::uint64_t>());
  const auto kind = in.take<std::uint32_t>();
  if (kind > static_cast<std::uint32_t>(CouplingKind::conv1d))
    throw CorruptFileError(path.string() + ": corrupt file: unknown coupling kind");
  cfg.coupling = static_cast<CouplingKind>(kind);
  const auto seed = in.take<std::uint64_t>();
  const auto n_blocks = in.take<std::uint64_t>();
  if (dim < 1 || dim > (Index{1} << 24) || cfg.levels < 1 || cfg.depth < 1 || cfg.width < 1 ||
      cfg.width > (Index{1} << 16) || n_blocks != static_cast<std::uint64_t>(cfg.blocks()))
    throw CorruptFileError(path.string() + ": corrupt file: inconsistent header");

  // Rebuild the skeleton, then overwrite everything stored in the file.
  FlowModel model = make_flow(dim, cfg, seed);
  for (auto& b : model.blocks) {
    std::vector<Index> perm(static_cast<std::size_t>(dim));
    for (auto& p : perm) p = static_cast<Index>(in.take<std::uint64_t>());
    try {
      b.permutation = Permutation::from(std::move(perm));
    } catch (const DomainError&) {
      throw CorruptFileError(path.string() + ": corrupt file: invalid permutation");
    }
    b.actnorm.initialized = in.take<std::uint8_t>() != 0;
    auto& net = b.coupling.net;
    in.take_into(b.actnorm.scale);
    in.take_into(b.actnorm.bias);
    in.take_into(net.w1);
    in.take_into(net.b1);
    in.take_into(net.w2);
    in.take_into(net.b2);
    in.take_into(net.w3);
    in.take_into(net.b3);
  }
  in.expect_end();
  if (!pack_parameters(model).allFinite())
    throw CorruptFileError(path.string() + ": corrupt file: non-finite parameters");
  return model;
}

void save_training_log(const std::filesystem::path& path, const std::vector<double>& step_nll) {
  std::string text;
  char buf[64];
  for (std::size_t i = 0; i < step_nll.size(); ++i) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, step_nll[i]);
    text += std::to_string(i) + '\t' + std::string(buf, ptr) + '\n';
  }
  detail::write_all(path, text);
}

}  // namespace flowcal
