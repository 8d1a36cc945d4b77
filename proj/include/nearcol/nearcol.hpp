#pragma once

#include "nearcol/charts.hpp"
#include "nearcol/core.hpp"
#include "nearcol/curves.hpp"
#include "nearcol/dynamics.hpp"
#include "nearcol/localjup.hpp"
#include "nearcol/infinity.hpp"
#include "nearcol/localsun.hpp"
#include "nearcol/errors.hpp"
#include "nearcol/kepler.hpp"
#include "nearcol/numutil.hpp"
