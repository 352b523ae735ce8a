// SPDX-License-Identifier: Apache-2.0
#include "gnelf/cli.hpp"

int main(int argc, char** argv) { return gnelf::run_cli(argc, argv); }
