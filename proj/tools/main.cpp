#include <vector>

#include "cavtrack/cli.hpp"

int main(int argc, char** argv) {
    return cavtrack::run_command(std::vector<std::string>(argv + 1, argv + argc));
}
