#pragma once

#include "coco/analysis.hpp"
#include "coco/config.hpp"
#include "coco/dynamics.hpp"
#include "coco/error.hpp"
#include "coco/experiment.hpp"
#include "coco/game.hpp"
#include "coco/noise.hpp"
#include "coco/rng.hpp"
#include "coco/schedule.hpp"
#include "coco/summation.hpp"
