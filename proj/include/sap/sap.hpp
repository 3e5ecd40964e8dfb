#pragma once

// Split-and-parallelize banded preconditioning for general sparse systems:
// reordering (diagonal boosting, bandwidth reduction), drop-off to a band,
// partitioned block factorization with spike-based interface coupling, and
// Krylov iteration on the untruncated system.

#include "sap/banded_matrix.hpp"
#include "sap/benchmark.hpp"
#include "sap/block_factors.hpp"
#include "sap/errors.hpp"
#include "sap/krylov.hpp"
#include "sap/matrix_market.hpp"
#include "sap/partition.hpp"
#include "sap/pipeline.hpp"
#include "sap/reorder_cm.hpp"
#include "sap/reorder_db.hpp"
#include "sap/sparse_matrix.hpp"
#include "sap/spike.hpp"
