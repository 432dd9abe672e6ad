#pragma once

namespace uacer {
int cli_main(int argc, char** argv);
}
