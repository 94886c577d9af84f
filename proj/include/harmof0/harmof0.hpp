/*
 * Copyright 2026 The HarmoF0 Toolkit Authors
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
#pragma once

#include "harmof0/error.hpp"
#include "harmof0/evaluation.hpp"
#include "harmof0/gradcheck.hpp"
#include "harmof0/harmonic_dilation.hpp"
#include "harmof0/kernels.hpp"
#include "harmof0/logspec.hpp"
#include "harmof0/model.hpp"
#include "harmof0/nn.hpp"
#include "harmof0/parallel.hpp"
#include "harmof0/pitch_track.hpp"
#include "harmof0/tensor.hpp"
#include "harmof0/training.hpp"
#include "harmof0/wav.hpp"
#include "harmof0/weights_io.hpp"
