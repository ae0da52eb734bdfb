#pragma once

#include "piven/config.hpp"
#include "piven/data.hpp"
#include "piven/ensemble.hpp"
#include "piven/error.hpp"
#include "piven/experiment.hpp"
#include "piven/loss.hpp"
#include "piven/matrix.hpp"
#include "piven/metrics.hpp"
#include "piven/nn.hpp"
#include "piven/random.hpp"
#include "piven/report.hpp"
