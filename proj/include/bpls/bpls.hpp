#pragma once

// Umbrella header: Bayesian pseudo-label selection for semi-supervised
// self-training with Laplace-approximated posterior-predictive criteria.

#include "bpls/bench.hpp"
#include "bpls/criteria.hpp"
#include "bpls/data.hpp"
#include "bpls/errors.hpp"
#include "bpls/extensions.hpp"
#include "bpls/model.hpp"
#include "bpls/numerics.hpp"
#include "bpls/prior.hpp"
#include "bpls/rng.hpp"
#include "bpls/selftrain.hpp"
