/*
 * Copyright 2026 The langpref Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "langpref/adapters.hpp"
#include "langpref/backends/pipe.hpp"
#include "langpref/backends/scripted.hpp"
#include "langpref/contextlab.hpp"
#include "langpref/corpus.hpp"
#include "langpref/digest.hpp"
#include "langpref/error.hpp"
#include "langpref/filtergate.hpp"
#include "langpref/language.hpp"
#include "langpref/log.hpp"
#include "langpref/metrics.hpp"
#include "langpref/parallel.hpp"
#include "langpref/probe.hpp"
#include "langpref/prompts.hpp"
#include "langpref/runner/analysis.hpp"
#include "langpref/runner/config.hpp"
#include "langpref/runner/pipeline.hpp"
#include "langpref/runner/plots.hpp"
#include "langpref/runner/tables.hpp"
#include "langpref/stats.hpp"
#include "langpref/surrogate.hpp"
#include "langpref/transport.hpp"
