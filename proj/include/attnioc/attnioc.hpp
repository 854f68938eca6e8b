#pragma once

#include "attnioc/belief.hpp"
#include "attnioc/config.hpp"
#include "attnioc/dataset_io.hpp"
#include "attnioc/dpe.hpp"
#include "attnioc/estimators.hpp"
#include "attnioc/experiment.hpp"
#include "attnioc/gradients.hpp"
#include "attnioc/metrics.hpp"
#include "attnioc/model.hpp"
#include "attnioc/simulator.hpp"
#include "attnioc/soft_policy.hpp"
