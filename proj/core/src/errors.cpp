#include "rpcag/errors.hpp"

// Anchors the vtables of the error hierarchy in the library.
namespace rpcag {}
