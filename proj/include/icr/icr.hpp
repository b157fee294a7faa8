#pragma once

#include "icr/error.hpp"
#include "icr/rng.hpp"
#include "icr/tokens.hpp"

#include "icr/lm/checkpoint.hpp"
#include "icr/lm/decoder.hpp"
#include "icr/lm/forward.hpp"
#include "icr/lm/model.hpp"
#include "icr/lm/optim.hpp"

#include "icr/babel/oracle.hpp"
#include "icr/babel/vocab.hpp"
#include "icr/babel/world.hpp"

#include "icr/sampler.hpp"

#include "icr/reward/alpha.hpp"
#include "icr/reward/rewards.hpp"

#include "icr/pairs.hpp"

#include "icr/train/iterate.hpp"
#include "icr/train/losses.hpp"
#include "icr/train/trainer.hpp"

#include "icr/eval/eval.hpp"

#include "icr/pipeline/config.hpp"
#include "icr/pipeline/gradcheck.hpp"
#include "icr/pipeline/io.hpp"
#include "icr/pipeline/run_dir.hpp"
#include "icr/pipeline/stages.hpp"
