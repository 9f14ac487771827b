#pragma once

#include "keyvote3d/error.hpp"
#include "keyvote3d/geometry.hpp"
#include "keyvote3d/metrics.hpp"
#include "keyvote3d/pose_fit.hpp"
#include "keyvote3d/synth.hpp"
#include "keyvote3d/vote_field.hpp"
#include "keyvote3d/voting.hpp"
#include "keyvote3d/io/depth.hpp"
#include "keyvote3d/io/json_files.hpp"
#include "keyvote3d/io/ply.hpp"
#include "keyvote3d/io/vote_field_io.hpp"
