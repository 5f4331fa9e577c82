package org.example.dfs.util;

public class Paths {
    public static String blockFile(String dir, long blockId) {
        return dir + "/blk_" + blockId;
    }

    public static String metaFile(String dir, long blockId) {
        return blockFile(dir, blockId) + ".meta";
    }
}
