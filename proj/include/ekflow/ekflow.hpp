#pragma once

#include "ekflow/errors.hpp"
#include "ekflow/spectral_geometry.hpp"
#include "ekflow/holomorphy.hpp"
#include "ekflow/extremal_flow.hpp"
#include "ekflow/class_flow.hpp"
