#pragma once

// Umbrella header for the dynamic theta-join processing library.

#include "djoin/engine.hpp"
#include "djoin/gjt.hpp"
#include "djoin/gmr.hpp"
#include "djoin/gyo.hpp"
#include "djoin/index.hpp"
#include "djoin/parser.hpp"
#include "djoin/predicate.hpp"
#include "djoin/query.hpp"
#include "djoin/schema.hpp"
#include "djoin/trep.hpp"
#include "djoin/value.hpp"
