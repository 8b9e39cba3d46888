#pragma once

#include "mtlinear/common.hpp"
#include "mtlinear/config.hpp"
#include "mtlinear/data.hpp"
#include "mtlinear/diagnostics.hpp"
#include "mtlinear/eval.hpp"
#include "mtlinear/grouping.hpp"
#include "mtlinear/io.hpp"
#include "mtlinear/loss.hpp"
#include "mtlinear/models.hpp"
#include "mtlinear/sweep.hpp"
#include "mtlinear/trainer.hpp"
