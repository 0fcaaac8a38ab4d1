#pragma once

#include "gmmem/error.hpp"
#include "gmmem/core_model.hpp"
#include "gmmem/rng.hpp"
#include "gmmem/synth.hpp"
#include "gmmem/chi_square.hpp"
#include "gmmem/em_engine.hpp"
#include "gmmem/init_kmeans.hpp"
#include "gmmem/diagnostics.hpp"
#include "gmmem/io.hpp"
#include "gmmem/experiments.hpp"
