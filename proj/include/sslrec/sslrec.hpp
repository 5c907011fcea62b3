/*
 * Copyright 2026 The sslrec Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Library umbrella. config.hpp and cli.hpp are left out since they pull in
// yaml-cpp and CLI11.

#include "sslrec/augment.hpp"
#include "sslrec/datahub.hpp"
#include "sslrec/dense.hpp"
#include "sslrec/engine.hpp"
#include "sslrec/error.hpp"
#include "sslrec/evalkit.hpp"
#include "sslrec/kvtext.hpp"
#include "sslrec/models.hpp"
#include "sslrec/objectives.hpp"
#include "sslrec/rng.hpp"
#include "sslrec/sparse.hpp"
