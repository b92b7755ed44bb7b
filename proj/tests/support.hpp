// SPDX-License-Identifier: MIT
//
// Shared test helpers: the table-model and random-instance generators live
// in the bench oracles; tests reach them through this alias.
#pragma once

#include "mfg/bench.hpp"

namespace mfg::testing {

using bench::RandomInstance;
using bench::TableModel;
using bench::random_instance;
using bench::table_model;

}  // namespace mfg::testing
