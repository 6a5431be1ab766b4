// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include <splatlift/cli.hpp>

#include <iostream>

int main(int argc, char **argv)
{
    return splatlift::run_cli(argc, argv, std::cout, std::cerr);
}
