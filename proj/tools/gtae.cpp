// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "gtae/cli.hpp"

int main(int argc, char** argv) { return gtae::run_cli(argc, argv); }
