/*
 * Copyright 2026 The sqnreg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SQNREG_HPP_
#define SQNREG_HPP_

#include "sqnreg/error.hpp"
#include "sqnreg/features.hpp"
#include "sqnreg/grid.hpp"
#include "sqnreg/harness.hpp"
#include "sqnreg/io.hpp"
#include "sqnreg/lbfgs.hpp"
#include "sqnreg/measures.hpp"
#include "sqnreg/optim.hpp"
#include "sqnreg/parallel.hpp"
#include "sqnreg/regularizers.hpp"
#include "sqnreg/rng.hpp"
#include "sqnreg/spectral.hpp"
#include "sqnreg/synth.hpp"

#endif  // SQNREG_HPP_
