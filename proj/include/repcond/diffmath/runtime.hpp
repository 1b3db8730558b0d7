/*
 * Copyright 2026 The repcond Authors
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

namespace repcond::diffmath {

/// Keeps freed heap at the top of the arena instead of returning it to the
/// OS. Training builds and drops one tape per molecule; without this glibc
/// trims and re-grows the heap on every step. No-op on other allocators.
void retain_heap();

} // namespace repcond::diffmath
