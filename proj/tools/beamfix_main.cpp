// SPDX-License-Identifier: Apache-2.0
#include "beamfix/cli.hpp"

int main(int argc, char** argv) { return beamfix::cli::run(argc, argv); }
