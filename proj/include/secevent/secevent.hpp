/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#ifndef SECEVENT_SECEVENT_HPP_
#define SECEVENT_SECEVENT_HPP_

#include "secevent/core.hpp"
#include "secevent/types.hpp"
#include "secevent/corpus.hpp"
#include "secevent/entities.hpp"
#include "secevent/trg.hpp"
#include "secevent/metrics.hpp"
#include "secevent/clustering.hpp"
#include "secevent/gatnet.hpp"
#include "secevent/categorizer.hpp"
#include "secevent/userscore.hpp"
#include "secevent/pipeline.hpp"
#include "secevent/synthetic.hpp"

#endif  // SECEVENT_SECEVENT_HPP_
