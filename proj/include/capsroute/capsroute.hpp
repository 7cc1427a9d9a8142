// Umbrella header.
#pragma once

#include "capsroute/attention.hpp"
#include "capsroute/bench.hpp"
#include "capsroute/capsules.hpp"
#include "capsroute/config.hpp"
#include "capsroute/csdr.hpp"
#include "capsroute/decoder.hpp"
#include "capsroute/eval.hpp"
#include "capsroute/image_io.hpp"
#include "capsroute/losses.hpp"
#include "capsroute/mcg.hpp"
#include "capsroute/metrics.hpp"
#include "capsroute/params.hpp"
#include "capsroute/pipeline.hpp"
#include "capsroute/prng.hpp"
#include "capsroute/routing.hpp"
#include "capsroute/scan.hpp"
#include "capsroute/ssm.hpp"
#include "capsroute/tensor.hpp"
#include "capsroute/verify.hpp"
