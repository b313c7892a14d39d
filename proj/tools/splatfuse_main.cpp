// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "splatfuse/cli.hpp"

int main(int argc, char **argv) {
    return splatfuse::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
