#pragma once

#include "eak/atlas.hpp"
#include "eak/blocks.hpp"
#include "eak/classify.hpp"
#include "eak/clusters.hpp"
#include "eak/error.hpp"
#include "eak/features.hpp"
#include "eak/io.hpp"
#include "eak/parallel.hpp"
#include "eak/rfe.hpp"
#include "eak/rng.hpp"
#include "eak/signal.hpp"
#include "eak/stats.hpp"
#include "eak/svm.hpp"
#include "eak/synth.hpp"
#include "eak/volume.hpp"
