#ifndef DIVA_DIVA_HPP
#define DIVA_DIVA_HPP

#include "diva/types.hpp"
#include "diva/linear_model.hpp"
#include "diva/loss.hpp"
#include "diva/derivative.hpp"
#include "diva/loo.hpp"
#include "diva/workflows.hpp"
#include "diva/rng.hpp"
#include "diva/io.hpp"

#endif
