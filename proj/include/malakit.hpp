#ifndef MALAKIT_HPP
#define MALAKIT_HPP

#include "malakit/dataset.hpp"
#include "malakit/diagnostics.hpp"
#include "malakit/errors.hpp"
#include "malakit/experiment.hpp"
#include "malakit/grid.hpp"
#include "malakit/hamiltonian.hpp"
#include "malakit/regularity.hpp"
#include "malakit/rng.hpp"
#include "malakit/samplers.hpp"
#include "malakit/target.hpp"
#include "malakit/trace_io.hpp"

#endif
