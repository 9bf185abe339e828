#pragma once

#include "gsp/bench.hpp"
#include "gsp/dml.hpp"
#include "gsp/error.hpp"
#include "gsp/gradcheck.hpp"
#include "gsp/linalg.hpp"
#include "gsp/metrics.hpp"
#include "gsp/pooling.hpp"
#include "gsp/simplex.hpp"
#include "gsp/transport.hpp"
#include "gsp/zsr.hpp"
