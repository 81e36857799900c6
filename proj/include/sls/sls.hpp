#pragma once

#include "errors.hpp"
#include "random.hpp"
#include "problems.hpp"
#include "directions.hpp"
#include "linesearch.hpp"
#include "optimizer.hpp"
#include "diagnostics.hpp"
#include "config.hpp"
#include "trace.hpp"
#include "commands.hpp"
