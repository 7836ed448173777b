#pragma once

#include "prefopt/errors.hpp"
#include "prefopt/numeric.hpp"
#include "prefopt/rng.hpp"
#include "prefopt/domain.hpp"
#include "prefopt/dataset_io.hpp"
#include "prefopt/policy.hpp"
#include "prefopt/policy_io.hpp"
#include "prefopt/objectives.hpp"
#include "prefopt/simplex_search.hpp"
#include "prefopt/environment.hpp"
#include "prefopt/reward_augment.hpp"
#include "prefopt/run_config.hpp"
#include "prefopt/loops.hpp"
#include "prefopt/run_io.hpp"
#include "prefopt/verify.hpp"
#include "prefopt/cli.hpp"
