// Copyright 2026 The ConvForge Authors
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

#ifndef CONVFORGE_ERROR_H_
#define CONVFORGE_ERROR_H_

#include <stdexcept>
#include <string>

namespace convforge {

// All library failures surface as this exception (or a subclass). The
// message names the violated invariant so the CLI can print it verbatim.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A pipeline stage was invoked before the stage it depends on.
class MissingArtifact : public Error {
 public:
  MissingArtifact(const std::string& stage, const std::string& detail)
      : Error("missing prerequisite stage '" + stage + "': " + detail),
        stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace convforge

#define CONVFORGE_CHECK(cond, msg)                                    \
  do {                                                                \
    if (!(cond)) throw ::convforge::Error(std::string(msg));          \
  } while (false)

#endif  // CONVFORGE_ERROR_H_
