#pragma once

#include "xfc/archive.hpp"
#include "xfc/cfnn.hpp"
#include "xfc/field.hpp"
#include "xfc/huffman.hpp"
#include "xfc/lossless.hpp"
#include "xfc/manifest.hpp"
#include "xfc/metrics.hpp"
#include "xfc/parallel.hpp"
#include "xfc/pipeline.hpp"
#include "xfc/predictors.hpp"
#include "xfc/quantizer.hpp"
#include "xfc/synthetic.hpp"
