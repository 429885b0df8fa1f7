#pragma once

#include "lpm/admissibility.hpp"
#include "lpm/config.hpp"
#include "lpm/dichotomy.hpp"
#include "lpm/expr.hpp"
#include "lpm/linalg.hpp"
#include "lpm/manifold.hpp"
#include "lpm/perturbation.hpp"
#include "lpm/pipeline.hpp"
#include "lpm/rates.hpp"
#include "lpm/verify.hpp"
