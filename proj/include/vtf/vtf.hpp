#pragma once

#include "vtf/cli.hpp"
#include "vtf/config.hpp"
#include "vtf/data.hpp"
#include "vtf/error.hpp"
#include "vtf/gradcheck.hpp"
#include "vtf/metrics.hpp"
#include "vtf/model.hpp"
#include "vtf/nn.hpp"
#include "vtf/ops.hpp"
#include "vtf/param.hpp"
#include "vtf/prompt.hpp"
#include "vtf/schema.hpp"
#include "vtf/tensor.hpp"
#include "vtf/text_encoder.hpp"
#include "vtf/train.hpp"
#include "vtf/verify.hpp"
#include "vtf/vision.hpp"
