#pragma once

#include "qens/linalg.hpp"
#include "qens/systems.hpp"
#include "qens/dynamics.hpp"
#include "qens/sampling.hpp"
#include "qens/parallel.hpp"
#include "qens/evaluate.hpp"
#include "qens/optimize.hpp"
