#pragma once

#include "rarma/detection.hpp"
#include "rarma/estimation.hpp"
#include "rarma/grid.hpp"
#include "rarma/inference.hpp"
#include "rarma/io.hpp"
#include "rarma/link.hpp"
#include "rarma/model.hpp"
#include "rarma/parallel.hpp"
#include "rarma/rayleigh.hpp"
#include "rarma/simulation.hpp"
#include "rarma/specfun.hpp"
