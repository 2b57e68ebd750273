#pragma once

// Convenience umbrella: the whole library in one include.

#include "cavtomo/cat.hpp"
#include "cavtomo/config.hpp"
#include "cavtomo/dispersive.hpp"
#include "cavtomo/dynamics.hpp"
#include "cavtomo/fock.hpp"
#include "cavtomo/io.hpp"
#include "cavtomo/maxent.hpp"
#include "cavtomo/measurement.hpp"
#include "cavtomo/pipeline.hpp"
#include "cavtomo/prepare.hpp"
#include "cavtomo/rng.hpp"
#include "cavtomo/wigner.hpp"
