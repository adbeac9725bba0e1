#pragma once

#include "hsnn/graph.hpp"
#include "hsnn/ops/conv.hpp"
#include "hsnn/ops/elementwise.hpp"
#include "hsnn/ops/linalg.hpp"
#include "hsnn/ops/loss.hpp"
#include "hsnn/ops/norm.hpp"
#include "hsnn/ops/pool.hpp"
#include "hsnn/ops/shape_ops.hpp"
#include "hsnn/tensor.hpp"
