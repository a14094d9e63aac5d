#pragma once

#include "specsel/common.hpp"
#include "specsel/covariance.hpp"
#include "specsel/dataset.hpp"
#include "specsel/harness.hpp"
#include "specsel/mixture.hpp"
#include "specsel/modelcomp.hpp"
#include "specsel/search.hpp"
#include "specsel/serialize.hpp"
