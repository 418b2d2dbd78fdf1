#pragma once

// Everything except the HTTP backend and the command line.

#include "promptprism/dataset.hpp"
#include "promptprism/digest.hpp"
#include "promptprism/errors.hpp"
#include "promptprism/evalkit.hpp"
#include "promptprism/experiments.hpp"
#include "promptprism/llm_gateway.hpp"
#include "promptprism/perturb.hpp"
#include "promptprism/profiler.hpp"
#include "promptprism/prompt_model.hpp"
#include "promptprism/syntax.hpp"
#include "promptprism/taxonomy.hpp"
#include "promptprism/templates.hpp"
#include "promptprism/unicode.hpp"
#include "promptprism/workflows.hpp"
