#pragma once

#include "hsnn/pipeline/checkpoint.hpp"
#include "hsnn/pipeline/config.hpp"
#include "hsnn/pipeline/dataset.hpp"
#include "hsnn/pipeline/metrics.hpp"
#include "hsnn/pipeline/model.hpp"
#include "hsnn/pipeline/optim.hpp"
#include "hsnn/pipeline/train.hpp"
