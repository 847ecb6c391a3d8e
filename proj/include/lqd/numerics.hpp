#pragma once

#include "lqd/numerics/conv.hpp"
#include "lqd/numerics/fft.hpp"
#include "lqd/numerics/ops.hpp"
#include "lqd/numerics/rng.hpp"
#include "lqd/numerics/tape.hpp"
#include "lqd/numerics/tensor.hpp"
