#pragma once

// Cycle-based two-state simulation of the supported subset, used by the
// bundled functional checker. Every register updates on one global clock
// tick and starts at zero; clock inputs are held low and never compared.

#include "verigrag/verilog.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace verigrag::sim {

using Values = std::map<std::string, std::uint64_t, std::less<>>;

class Simulator {
public:
    /// Throws ElaborationError when `top` (or anything it instantiates) does not elaborate.
    Simulator(const std::vector<netlist::ModuleAST>& modules, const std::string& top);
    ~Simulator();
    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    void reset();
    /// Applies `inputs`, returns the outputs seen before the clock edge, then ticks.
    Values step(const Values& inputs);

    const netlist::ModuleAST& top() const;
    /// Input ports that clock a register anywhere in the hierarchy.
    const std::vector<std::string>& clock_inputs() const;

private:
    struct Instance;
    std::unique_ptr<Instance> root_;
    std::vector<std::string> clocks_;
};

/// The last module that no other module instantiates.
std::string top_module_name(const std::vector<netlist::ModuleAST>& modules);

struct EquivalenceOptions {
    int trials = 8;
    int cycles = 32;
    std::uint64_t seed = 0;
};

struct EquivalenceResult {
    bool equivalent = false;
    std::string message;
};

/// Random-stimulus comparison of the two top modules. Port names, directions
/// and widths must match.
EquivalenceResult check_equivalence(const std::vector<netlist::ModuleAST>& reference,
                                    const std::vector<netlist::ModuleAST>& candidate,
                                    const EquivalenceOptions& options = {});

}  // namespace verigrag::sim
