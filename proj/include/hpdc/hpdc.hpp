#pragma once

#include "hpdc/bitsplit.hpp"
#include "hpdc/codec.hpp"
#include "hpdc/depth_io.hpp"
#include "hpdc/entropy/cdf.hpp"
#include "hpdc/entropy/range_coder.hpp"
#include "hpdc/entropy/stream.hpp"
#include "hpdc/entropy/symbol_coding.hpp"
#include "hpdc/likelihood.hpp"
#include "hpdc/lossy.hpp"
#include "hpdc/model.hpp"
#include "hpdc/nn/adam.hpp"
#include "hpdc/nn/gradcheck.hpp"
#include "hpdc/residual.hpp"
#include "hpdc/selftest.hpp"
#include "hpdc/trainer.hpp"
