#pragma once

#include "nirgnn/autodiff/adam.hpp"
#include "nirgnn/autodiff/container.hpp"
#include "nirgnn/autodiff/ops.hpp"
#include "nirgnn/autodiff/params.hpp"
#include "nirgnn/autodiff/random.hpp"
#include "nirgnn/autodiff/special.hpp"
#include "nirgnn/autodiff/tensor.hpp"
