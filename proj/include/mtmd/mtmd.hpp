#pragma once

#include "mtmd/concept_modules.hpp"
#include "mtmd/data/csv.hpp"
#include "mtmd/data/panel.hpp"
#include "mtmd/data/synthetic.hpp"
#include "mtmd/encoder.hpp"
#include "mtmd/errors.hpp"
#include "mtmd/harness/ablation.hpp"
#include "mtmd/harness/checkpoint.hpp"
#include "mtmd/harness/config.hpp"
#include "mtmd/harness/export.hpp"
#include "mtmd/harness/optimizer.hpp"
#include "mtmd/harness/train.hpp"
#include "mtmd/memory.hpp"
#include "mtmd/metrics.hpp"
#include "mtmd/model.hpp"
#include "mtmd/numerics/gradcheck.hpp"
#include "mtmd/numerics/ops.hpp"
#include "mtmd/numerics/tape.hpp"
#include "mtmd/numerics/tensor.hpp"
