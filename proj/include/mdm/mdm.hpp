#pragma once

// Everything: model types, parser, CFG compiler, semantics, environments,
// ITL checker, statistical model checking and the command implementations.

#include "mdm/error.hpp"
#include "mdm/expr.hpp"
#include "mdm/state.hpp"
#include "mdm/model.hpp"
#include "mdm/parser.hpp"
#include "mdm/cfg_exec.hpp"
#include "mdm/environment.hpp"
#include "mdm/semantics.hpp"
#include "mdm/itl.hpp"
#include "mdm/smc.hpp"
#include "mdm/commands.hpp"
