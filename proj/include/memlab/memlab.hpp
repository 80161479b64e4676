#pragma once

#include "memlab/corpus/domains.hpp"
#include "memlab/corpus/frequency.hpp"
#include "memlab/corpus/generate.hpp"
#include "memlab/corpus/tokenizer.hpp"
#include "memlab/internals/importance.hpp"
#include "memlab/internals/lens.hpp"
#include "memlab/internals/similarity.hpp"
#include "memlab/memscore/compression.hpp"
#include "memlab/memscore/score.hpp"
#include "memlab/model/transformer.hpp"
#include "memlab/report/pipeline.hpp"
#include "memlab/stats/headsets.hpp"
#include "memlab/stats/profiles.hpp"
#include "memlab/stats/wasserstein.hpp"
#include "memlab/tensor/adam.hpp"
#include "memlab/tensor/ops.hpp"
#include "memlab/train/trainer.hpp"
