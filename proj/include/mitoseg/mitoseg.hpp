#pragma once

#include "mitoseg/binary_io.hpp"
#include "mitoseg/config.hpp"
#include "mitoseg/curves.hpp"
#include "mitoseg/error.hpp"
#include "mitoseg/formats.hpp"
#include "mitoseg/geometry.hpp"
#include "mitoseg/grid.hpp"
#include "mitoseg/imaging.hpp"
#include "mitoseg/manifest.hpp"
#include "mitoseg/meshout.hpp"
#include "mitoseg/parallel.hpp"
#include "mitoseg/pipeline.hpp"
#include "mitoseg/ridges.hpp"
#include "mitoseg/settings.hpp"
#include "mitoseg/snakes.hpp"
#include "mitoseg/validation.hpp"
