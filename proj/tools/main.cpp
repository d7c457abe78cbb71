#include "app/commands.hpp"

int main(int argc, char** argv) { return fedsg::app::run_cli(argc, argv); }
