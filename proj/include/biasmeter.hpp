// Copyright 2026 The BiasMeter Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "biasmeter/errors.hpp"
#include "biasmeter/random.hpp"
#include "biasmeter/types.hpp"
#include "biasmeter/distance.hpp"
#include "biasmeter/aggregation.hpp"
#include "biasmeter/measures.hpp"
#include "biasmeter/stats.hpp"
#include "biasmeter/simulator.hpp"
#include "biasmeter/io.hpp"
