#pragma once

#include <string>

#include "io/config.hpp"

namespace fe2e {

// Executes one CLI command against a fully-assembled key=value configuration.
// Commands: quant-table, gen-data, train, eval, field-plot, ablate.
// Every run writes a manifest echoing the resolved configuration into its
// output directory. Throws LabError with the appropriate status on failure.
void run_command(const std::string& command, const KeyValueConfig& config);

const char* lab_version();

}  // namespace fe2e
