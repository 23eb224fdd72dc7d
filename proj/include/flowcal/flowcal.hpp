#pragma once

#include "flowcal/baselines.hpp"
#include "flowcal/diagnostics.hpp"
#include "flowcal/embedding_store.hpp"
#include "flowcal/error.hpp"
#include "flowcal/eval.hpp"
#include "flowcal/flow.hpp"
#include "flowcal/numerics.hpp"
#include "flowcal/synth.hpp"
