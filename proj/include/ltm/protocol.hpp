#pragma once

#include "ltm/protocol/behavior.hpp"
#include "ltm/protocol/imitation.hpp"
#include "ltm/protocol/prompting.hpp"
#include "ltm/protocol/stimulus.hpp"
#include "ltm/protocol/types.hpp"
