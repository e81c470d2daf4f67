// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "nvdp/cli.hpp"

int main(int argc, char** argv) { return nvdp::cli::run(argc, argv, std::cout, std::cerr); }
