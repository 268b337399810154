#pragma once

#include "ltm/stats/intensity.hpp"
#include "ltm/stats/wilcoxon.hpp"
