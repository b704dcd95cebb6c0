#pragma once

// Umbrella header.

#include "conceptcil/concept_pool.hpp"
#include "conceptcil/dataset.hpp"
#include "conceptcil/embedding_io.hpp"
#include "conceptcil/engine.hpp"
#include "conceptcil/error.hpp"
#include "conceptcil/fusion_head.hpp"
#include "conceptcil/gradcheck.hpp"
#include "conceptcil/matrix.hpp"
#include "conceptcil/metrics.hpp"
#include "conceptcil/ops.hpp"
#include "conceptcil/optim.hpp"
#include "conceptcil/replay.hpp"
#include "conceptcil/synthetic.hpp"
#include "conceptcil/tfidf.hpp"
