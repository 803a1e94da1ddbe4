// Umbrella header.
#pragma once

#include "milpool/adam.hpp"
#include "milpool/bag_io.hpp"
#include "milpool/dataset.hpp"
#include "milpool/gradcheck.hpp"
#include "milpool/graph.hpp"
#include "milpool/heads.hpp"
#include "milpool/heatmap.hpp"
#include "milpool/matrix.hpp"
#include "milpool/metrics.hpp"
#include "milpool/result_io.hpp"
#include "milpool/rng.hpp"
#include "milpool/stats.hpp"
#include "milpool/summary.hpp"
#include "milpool/synth.hpp"
#include "milpool/text.hpp"
#include "milpool/trainer.hpp"
