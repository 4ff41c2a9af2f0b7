#pragma once

// Convenience include for the whole library.

#include "fedbary/bregman.hpp"
#include "fedbary/datagen.hpp"
#include "fedbary/dual.hpp"
#include "fedbary/error.hpp"
#include "fedbary/federation.hpp"
#include "fedbary/instance_io.hpp"
#include "fedbary/measures.hpp"
#include "fedbary/rng.hpp"
#include "fedbary/transport.hpp"
