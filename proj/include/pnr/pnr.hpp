#pragma once

// Umbrella header for the whole library.

#include "pnr/config.hpp"
#include "pnr/discrimination.hpp"
#include "pnr/errors.hpp"
#include "pnr/experiments.hpp"
#include "pnr/fft.hpp"
#include "pnr/filtering.hpp"
#include "pnr/io.hpp"
#include "pnr/manifest.hpp"
#include "pnr/parallel.hpp"
#include "pnr/report.hpp"
#include "pnr/rng.hpp"
#include "pnr/signal_model.hpp"
#include "pnr/trace.hpp"
#include "pnr/version.hpp"
