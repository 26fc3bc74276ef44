#pragma once

#include "hdd/cli.hpp"
#include "hdd/convex_oracle.hpp"
#include "hdd/csv.hpp"
#include "hdd/flow.hpp"
#include "hdd/gallery.hpp"
#include "hdd/integrals.hpp"
#include "hdd/lyapunov.hpp"
#include "hdd/ode.hpp"
#include "hdd/penalty_schedule.hpp"
#include "hdd/quadrature.hpp"
#include "hdd/serialization.hpp"
#include "hdd/types.hpp"
