#pragma once
// Everything: data I/O, both backbones, the cascade, training, keyness,
// metrics and the command-line driver.

#include "lmsd/cascade/report.hpp"
#include "lmsd/cascade/routing.hpp"
#include "lmsd/cli/config.hpp"
#include "lmsd/cli/run.hpp"
#include "lmsd/dataio/augment.hpp"
#include "lmsd/dataio/folds.hpp"
#include "lmsd/dataio/load.hpp"
#include "lmsd/dataio/normalize.hpp"
#include "lmsd/dataio/resample.hpp"
#include "lmsd/dataio/store.hpp"
#include "lmsd/dataio/synth.hpp"
#include "lmsd/keyness/distill.hpp"
#include "lmsd/keyness/heatmap.hpp"
#include "lmsd/keyness/kel.hpp"
#include "lmsd/keyness/retrieval.hpp"
#include "lmsd/metrics/classification.hpp"
#include "lmsd/metrics/efficiency.hpp"
#include "lmsd/metrics/report.hpp"
#include "lmsd/metrics/similarity.hpp"
#include "lmsd/metrics/stability.hpp"
#include "lmsd/nn/checkpoint.hpp"
#include "lmsd/nn/model.hpp"
#include "lmsd/training/trainer.hpp"
