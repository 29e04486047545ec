#pragma once

#include <vector>

namespace rodenet {

using State = std::vector<double>;
/// Samples x(t_0), x(t_1), ... on a uniform grid.
using Trajectory = std::vector<State>;

}  // namespace rodenet
