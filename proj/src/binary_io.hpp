// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "splatfuse/common.hpp"

namespace splatfuse::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian layout");

template <typename T>
void put(std::ostream &out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char *>(&value), sizeof(T));
}

template <typename T>
T get(std::istream &in, const char *what) {
    static_assert(std::is_trivially_copyable_v<T>);
    T value{};
    if (!in.read(reinterpret_cast<char *>(&value), sizeof(T))) {
        fail_io(std::string("truncated input while reading ") + what);
    }
    return value;
}

} // namespace splatfuse::detail
