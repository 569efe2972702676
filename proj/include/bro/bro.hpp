#pragma once

#include "bro/core/alloc_stats.hpp"
#include "bro/core/errors.hpp"
#include "bro/core/fft.hpp"
#include "bro/core/linalg.hpp"
#include "bro/core/ops.hpp"
#include "bro/core/tape.hpp"
#include "bro/core/tensor.hpp"

#include "bro/ortho/bro_conv.hpp"
#include "bro/ortho/bro_dense.hpp"
#include "bro/ortho/cayley.hpp"
#include "bro/ortho/conv_oracle.hpp"
#include "bro/ortho/lot.hpp"
#include "bro/ortho/reflector.hpp"
#include "bro/ortho/semi_ortho.hpp"

#include "bro/cert/certification.hpp"
#include "bro/loss/losses.hpp"

#include "bro/model/checkpoint.hpp"
#include "bro/model/data.hpp"
#include "bro/model/layers.hpp"
#include "bro/model/model.hpp"
#include "bro/model/pgd.hpp"
#include "bro/model/train.hpp"

#include "bro/bench/bench.hpp"
