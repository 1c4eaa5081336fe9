#pragma once

#include "cppgen/error.hpp"
#include "cppgen/inference.hpp"
#include "cppgen/io.hpp"
#include "cppgen/kernel.hpp"
#include "cppgen/ksample.hpp"
#include "cppgen/newick.hpp"
#include "cppgen/quadrature.hpp"
#include "cppgen/random.hpp"
#include "cppgen/rates.hpp"
#include "cppgen/simulate.hpp"
#include "cppgen/stats.hpp"
#include "cppgen/tree.hpp"
#include "cppgen/validate.hpp"
