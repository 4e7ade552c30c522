#pragma once

// Umbrella header.

#include "uge/common.hpp"
#include "uge/graph.hpp"
#include "uge/group_index.hpp"
#include "uge/split.hpp"
#include "uge/biasgen.hpp"
#include "uge/debias.hpp"
#include "uge/embed.hpp"
#include "uge/eval.hpp"
#include "uge/config.hpp"
#include "uge/experiment.hpp"
