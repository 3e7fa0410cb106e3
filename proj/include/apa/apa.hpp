#pragma once

#include "apa/coefficients.hpp"
#include "apa/core.hpp"
#include "apa/driver.hpp"
#include "apa/history.hpp"
#include "apa/oracles/gmres.hpp"
#include "apa/oracles/multisecant.hpp"
#include "apa/policy.hpp"
#include "apa/problems/linear.hpp"
#include "apa/problems/scf.hpp"
#include "apa/trace.hpp"
