#pragma once

#include "bel/blocking.hpp"
#include "bel/convolution.hpp"
#include "bel/core.hpp"
#include "bel/digest.hpp"
#include "bel/estimator.hpp"
#include "bel/expansion.hpp"
#include "bel/filters.hpp"
#include "bel/io.hpp"
#include "bel/linproc.hpp"
#include "bel/parallel.hpp"
#include "bel/polynomial.hpp"
#include "bel/rng.hpp"
#include "bel/window.hpp"
