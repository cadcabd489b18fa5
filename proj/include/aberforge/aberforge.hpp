#pragma once

// Everything in one include.

#include "aberforge/error.hpp"
#include "aberforge/image_io.hpp"
#include "aberforge/lens_io.hpp"
#include "aberforge/lenslib.hpp"
#include "aberforge/optics.hpp"
#include "aberforge/plot.hpp"
#include "aberforge/psf_io.hpp"
#include "aberforge/psf_repr.hpp"
#include "aberforge/quantify.hpp"
#include "aberforge/random.hpp"
#include "aberforge/raytrace.hpp"
#include "aberforge/simulate.hpp"
