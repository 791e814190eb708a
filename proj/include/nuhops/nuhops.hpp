#pragma once

#include "nuhops/core.hpp"
#include "nuhops/rng.hpp"
#include "nuhops/hilbert.hpp"
#include "nuhops/bcf.hpp"
#include "nuhops/noise.hpp"
#include "nuhops/propagator.hpp"
#include "nuhops/observables.hpp"
#include "nuhops/oracles.hpp"
#include "nuhops/ensemble.hpp"
#include "nuhops/config.hpp"
#include "nuhops/io.hpp"
