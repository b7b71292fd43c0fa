#ifndef DGGCN_DGGCN_HPP
#define DGGCN_DGGCN_HPP

#include "adam.hpp"
#include "autodiff.hpp"
#include "chemio.hpp"
#include "config.hpp"
#include "distgeo.hpp"
#include "elements.hpp"
#include "error.hpp"
#include "gradcheck.hpp"
#include "heap.hpp"
#include "model.hpp"
#include "synthetic.hpp"
#include "tensor.hpp"
#include "train.hpp"

#endif // DGGCN_DGGCN_HPP
